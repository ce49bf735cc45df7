fn main() {
    std::process::exit(outlier_embed::cli::dispatch(std::env::args_os()));
}
