fn main() {
    std::process::exit(rtm::cli::main_with_args(std::env::args_os()));
}
