//! Print an argon2id PHC string for a `[[users]]` entry's `password_hash`.
//!
//! ```text
//! cargo run -p palmwatch-service --example hash_password -- 'correct horse'
//! ```

use palmwatch_service::auth::{hash_password, verify_password};

fn main() {
    let Some(password) = std::env::args().nth(1) else {
        eprintln!("usage: hash_password <password>");
        std::process::exit(2);
    };
    let hash = hash_password(&password);
    assert!(verify_password(&password, &hash));
    println!("{hash}");
}
