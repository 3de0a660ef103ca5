fn main() {
    std::process::exit(rpg_cli::run_cli(std::env::args_os()));
}
