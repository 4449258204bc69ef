fn main() {
    std::process::exit(dco_meta::harness::cli_main(std::env::args_os()));
}
