//! The dimension-dependent sampling rate of empirical measures.

use mckean::analysis::epsilon_n;

fn main() -> mckean::Result<()> {
    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "N", "d = 1", "d = 4", "d = 6", "d = 10");
    for n in [16, 256, 4096, 65536] {
        let row: Vec<String> = [1, 4, 6, 10].iter().map(|&d| epsilon_n(n, d).map(|e| format!("{e:>12.5e}"))).collect::<Result<_, _>>()?;
        println!("{n:>8} {}", row.join(" "));
    }
    Ok(())
}
