fn main() { std::process::exit(dsd::cli::run()); }
