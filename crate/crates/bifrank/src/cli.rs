//! Command-line interface (stub while the library is under construction).
pub fn main() -> i32 {
    0
}
