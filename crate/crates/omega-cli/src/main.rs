fn main() {
    std::process::exit(omega_cli::run());
}
