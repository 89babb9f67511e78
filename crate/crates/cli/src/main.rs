fn main() {
    std::process::exit(auditlens::main_with_args(std::env::args_os()));
}
