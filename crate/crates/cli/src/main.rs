fn main() {
    std::process::exit(cavmem_cli::run(std::env::args_os()));
}
