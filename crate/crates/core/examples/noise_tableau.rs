//! One fine noise tableau drives every coarser mesh: coarse increments are
//! sums of fine ones, and a smaller ensemble uses a particle prefix.

use mckean::{NoiseTableau, TimeGrid};

fn main() -> mckean::Result<()> {
    let fine = TimeGrid::new(1.0, 8)?;
    let tableau = NoiseTableau::generate(7, 3, 4, 2, fine)?;

    let coarse = tableau.coarsen(&TimeGrid::new(1.0, 2)?)?;
    let by_hand: f64 = (0..4).map(|j| tableau.increment(1, j)[0]).sum();
    println!("particle 1, component 0, first coarse step: {:.6} (sum of fine: {by_hand:.6})", coarse.increment(1, 0)[0]);

    let prefix = tableau.truncate(2)?;
    assert_eq!(prefix.increment(1, 5), tableau.increment(1, 5));
    println!("a 2-particle prefix reuses the same increments");

    let mut dump = Vec::new();
    tableau.write_binary(&mut dump)?;
    let back = NoiseTableau::read_binary(dump.as_slice())?;
    println!("binary dump: {} bytes, round trip exact: {}", dump.len(), back == tableau);
    Ok(())
}
