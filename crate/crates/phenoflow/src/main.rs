fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(phenoflow::cli_main(&args));
}
