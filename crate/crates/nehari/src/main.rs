use clap::Parser;

fn main() {
    // usage errors are invalid input (exit 1); clap's default exit 2 is
    // reserved for converged-but-indeterminate outcomes
    let cli = match nehari::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(nehari::cli::run(&cli));
}
