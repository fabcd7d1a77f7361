use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    ExitCode::from(leosim_core::cli::main_from(std::env::args_os()) as u8)
}
