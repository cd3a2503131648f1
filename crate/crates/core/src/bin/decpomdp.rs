fn main() {
    std::process::exit(decpomdp::harness::cli_main(std::env::args_os()));
}
