fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MA2QL_LOG", "warn")).init();
    std::process::exit(ma2ql::harness::cli::main_with_args(std::env::args_os()));
}
