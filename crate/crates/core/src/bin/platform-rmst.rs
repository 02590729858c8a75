fn main() {
    std::process::exit(platform_rmst::cli::main());
}
