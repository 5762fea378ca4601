fn main() {
    std::process::exit(parastab_cli::dispatch(std::env::args_os()));
}
