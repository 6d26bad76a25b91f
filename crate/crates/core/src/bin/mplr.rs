fn main() -> std::process::ExitCode {
    mplr::cli::main()
}
