fn main() {
    std::process::exit(poas::cli::main())
}
