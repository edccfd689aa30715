fn main() {
    std::process::exit(evpipe::cli::run(std::env::args_os().collect()));
}
