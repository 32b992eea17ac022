fn main() -> std::process::ExitCode {
    audio_composer::cli::run()
}
