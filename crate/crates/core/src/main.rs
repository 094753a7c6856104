fn main() {
    std::process::exit(cmgl::cli::dispatch(std::env::args_os()));
}
