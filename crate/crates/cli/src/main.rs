use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gnn2mlp::run(std::env::args_os()))
}
