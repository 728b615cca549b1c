fn main() {
    std::process::exit(motionfield::cli::main_with_args(std::env::args_os()));
}
