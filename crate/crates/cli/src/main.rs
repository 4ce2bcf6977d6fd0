
fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SEMSEQ_LOG", "info")).init();
    let cli = semseq_cli::parse_args();
    std::process::exit(semseq_cli::run(cli));
}
