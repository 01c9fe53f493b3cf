//! Fill a rectangular hole in a microstructure with three different particle
//! budgets while the surrounding pixels stay frozen.

use dsd::dataset::synth_blobs;
use dsd::{inpaint, BoundaryCondition, IntensityGrid, SamplerConfig, ToyConvModel};

fn show(g: &IntensityGrid, mask: &[bool]) {
    for y in 0..g.height() {
        let row: String = (0..g.width())
            .map(|x| match (mask[y * g.width() + x], g.get(x, y, 0)) {
                (true, 0) => '.',
                (true, _) => '#',
                (false, 0) => ' ',
                (false, 1) => 'o',
                (false, _) => 'O',
            })
            .collect();
        println!("  {row}");
    }
}

fn main() -> dsd::Result<()> {
    let size = 16;
    let boundary = BoundaryCondition::NoFlux;
    let partial = synth_blobs(size, size, 1, 0.3, 1.5, 8)?.remove(0);
    let mask: Vec<bool> = (0..size * size)
        .map(|i| !((4..12).contains(&(i % size)) && (4..10).contains(&(i / size))))
        .collect();
    // An untrained model is enough to show the mechanics; swap in a trained
    // checkpoint with ToyConvModel::load for meaningful completions.
    let mut model = ToyConvModel::new(1, 8, boundary, 1.0, 40.0, 8)?;
    let cfg = SamplerConfig::new(size, size, vec![0], boundary, 40.0, 0.05);
    for total in [17, 20, 23] {
        let out = inpaint(&mut model, &partial, &mask, &[total], &cfg, 88)?;
        let frozen_same = (0..size * size).filter(|&i| mask[i]).all(|i| out.values()[i] == partial.values()[i]);
        println!("free-region total {total}, frozen region unchanged: {frozen_same}");
        show(&out, &mask);
    }
    Ok(())
}
