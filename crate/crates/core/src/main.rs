use clap::Parser;
use lrdirac::cli::{execute, Args};

fn main() {
    let args = Args::parse();
    std::process::exit(execute(&args, std::env::vars().collect()));
}
