use std::process::exit;

fn main() {
    exit(xfct_cli::run_cli());
}
