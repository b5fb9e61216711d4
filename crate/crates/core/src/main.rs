fn main() {
    std::process::exit(aoi_harvest::cli::main_with_args(std::env::args_os()));
}
