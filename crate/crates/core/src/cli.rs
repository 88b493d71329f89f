//! Command-line entry point (placeholder while subsystems land).

pub fn dispatch(_args: &[String]) -> i32 {
    eprintln!("not yet wired");
    1
}
