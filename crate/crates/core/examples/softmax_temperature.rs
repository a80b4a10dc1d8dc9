//! How temperature reshapes a softmax and the losses built on it.
//!
//! ```text
//! cargo run --example softmax_temperature
//! ```

use kdfair::nn::{cross_entropy_hard, cross_entropy_soft, softmax_t, total_loss};

fn main() -> kdfair::Result<()> {
    let teacher = [6.0, 2.5, 1.0, -1.0];
    let student = [3.0, 2.0, 0.5, 0.0];
    println!("{:>5}  {:<36} {:>8} {:>9}", "T", "softmax(teacher / T)", "entropy", "soft CE");
    for t in [1.0, 2.0, 5.0, 10.0, 20.0, 40.0] {
        let q = softmax_t(&teacher, t)?;
        let probs: Vec<String> = q.as_slice().iter().map(|p| format!("{p:.3}")).collect();
        let soft = cross_entropy_soft(&student, &q, t)?;
        println!("{t:>5}  {:<36} {:>8.4} {:>9.4}", format!("[{}]", probs.join(", ")), q.entropy(), soft);
    }

    let hard = cross_entropy_hard(&student, 0)?;
    let q5 = softmax_t(&teacher, 5.0)?;
    let soft5 = cross_entropy_soft(&student, &q5, 5.0)?;
    println!("\nhard CE {hard:.4}; soft CE at T=5 {soft5:.4}");
    for scaled in [false, true] {
        println!("alpha 0.8, T^2 scaling {scaled:<5}: total {:.4}", total_loss(0.8, soft5, hard, 5.0, scaled)?);
    }
    Ok(())
}
