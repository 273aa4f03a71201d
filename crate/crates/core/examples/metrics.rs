//! PCK, top-1 and Spearman correlation on small hand-made inputs.

use actionscope::capture::Visibility;
use actionscope::metrics::{average_ranks, pck, spearman, top1, PckConfig};

fn main() -> anyhow::Result<()> {
    let gt: Vec<[f64; 2]> = (0..25)
        .map(|i| [10.0 * i as f64, 5.0 * (i % 7) as f64])
        .collect();
    let pred: Vec<[f64; 2]> = gt
        .iter()
        .enumerate()
        .map(|(i, k)| [k[0] + i as f64, k[1]])
        .collect();
    let vis = vec![Visibility::Visible; 25];
    for t in [0.3, 0.5] {
        let v = pck(
            &[pred.clone()],
            &[gt.clone()],
            &[vis.clone()],
            &PckConfig::new(t)?,
        )?;
        println!("PCK-{t}: {v:.1}%");
    }

    let dists = vec![
        vec![0.1, 0.7, 0.2],
        vec![0.5, 0.5, 0.0],
        vec![0.2, 0.3, 0.5],
    ];
    println!("top-1: {:.1}%", top1(&dists, &[1, 1, 2])?);

    let judges = [82.5, 71.0, 90.0, 71.0, 64.5];
    let model = [80.0, 75.0, 88.0, 70.0, 60.0];
    println!("ranks {:?}", average_ranks(&judges));
    println!("Spearman {:.4}", spearman(&judges, &model)?);
    Ok(())
}
