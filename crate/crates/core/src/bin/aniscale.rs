fn main() {
    std::process::exit(aniscale::cli::run(std::env::args_os()));
}
