fn main() {
    std::process::exit(roadlayout::cli::run(std::env::args_os()));
}
