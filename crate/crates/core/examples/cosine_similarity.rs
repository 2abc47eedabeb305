//! Pairwise cosine similarities and average similarities for one window.
//!
//! cargo run --example cosine_similarity

use tokmerge::numerics::{
    argsort_descending, cosine_similarity_matrix, row_mean_excluding_self, TokenMatrix,
};

fn main() -> tokmerge::Result<()> {
    let tokens = TokenMatrix::from_rows(&[
        vec![1.0, 0.0, 0.0],
        vec![0.9, 0.1, 0.0],
        vec![0.8, 0.3, 0.1],
        vec![0.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0],
    ])?;
    let window = [0, 1, 2, 3, 4];

    let sims = cosine_similarity_matrix(&tokens, &window)?;
    println!("similarity matrix:");
    for i in 0..sims.size() {
        let row: Vec<String> = sims.row(i).iter().map(|v| format!("{v:6.3}")).collect();
        println!("  {}", row.join(" "));
    }

    let avg = row_mean_excluding_self(&sims)?;
    let order = argsort_descending(&avg)?;
    for &k in &order {
        println!("token {}: average similarity {:.4}", window[k], avg[k]);
    }
    println!("zero-norm token 4 scores 0 against everything");
    Ok(())
}
