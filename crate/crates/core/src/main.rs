fn main() -> std::process::ExitCode {
    pekit::cli::main()
}
