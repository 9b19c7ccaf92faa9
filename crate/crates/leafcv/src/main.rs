fn main() -> std::process::ExitCode {
    leafcv::cli::main_entry()
}
