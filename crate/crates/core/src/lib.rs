pub mod backstage;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod link_model;
pub mod mainstage;
pub mod routing;
pub mod topology;
