fn main() {
    std::process::exit(mobds::cli::main_with_args(std::env::args_os()));
}
