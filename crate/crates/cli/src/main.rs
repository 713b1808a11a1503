fn main() {
    std::process::exit(tabpix::run(std::env::args_os()));
}
