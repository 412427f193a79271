use std::process::ExitCode;

fn main() -> ExitCode {
    let code = gspnet_core::cli::main_from_args(std::env::args_os());
    ExitCode::from(code as u8)
}
