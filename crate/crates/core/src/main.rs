fn main() {
    std::process::exit(lfdeblur::cli::run(std::env::args_os()));
}
