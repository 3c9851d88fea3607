fn main() {
    std::process::exit(geoalign_cli::run(std::env::args_os()));
}
