fn main() {
    std::process::exit(plvcq::cli::run(std::env::args_os()));
}
