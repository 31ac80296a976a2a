fn main() {
    std::process::exit(aoii::cli::run(std::env::args_os()));
}
