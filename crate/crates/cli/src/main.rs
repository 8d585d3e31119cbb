fn main() {
    std::process::exit(mmaf_lab::run(std::env::args_os()));
}
