fn main() -> std::process::ExitCode {
    sofr_core::cli::run()
}
