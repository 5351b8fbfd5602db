fn main() {
    std::process::exit(mac_renewal::cli::main_with_args(std::env::args_os()));
}
