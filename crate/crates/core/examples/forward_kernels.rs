//! Build periodic and no-flux transition kernels, check that rows are
//! probability distributions and round-trip one through the dump format.

use dsd::{BoundaryCondition, Pixel, TransitionKernel};

fn main() -> dsd::Result<()> {
    let (w, h, rate) = (28, 28, 120.0);
    for boundary in [BoundaryCondition::Periodic, BoundaryCondition::NoFlux] {
        println!("{boundary:?}");
        for t in [1e-4, 1e-3, 1e-2, 1.0] {
            let k = TransitionKernel::new(boundary, w, h, rate, t)?;
            let corner = Pixel::new(0, 0);
            println!(
                "  t={t:<7} stay {:.5}  step right {:.5}  row-sum deviation {:.1e}",
                k.transition_prob(corner, corner)?,
                k.transition_prob(corner, Pixel::new(1, 0))?,
                k.max_row_sum_deviation()
            );
        }
    }

    let k = TransitionKernel::new(BoundaryCondition::Periodic, 64, 64, rate, 0.01)?;
    let path = std::env::temp_dir().join("dsd_example_kernel.dsdk");
    k.dump(&path)?;
    let back = TransitionKernel::load(&path)?;
    println!("dump round trip identical: {}", back.to_bytes() == k.to_bytes());
    std::fs::remove_file(&path).ok();
    Ok(())
}
