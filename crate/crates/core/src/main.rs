fn main() {
    std::process::exit(seqsurrogate::cli::run(std::env::args_os()));
}
