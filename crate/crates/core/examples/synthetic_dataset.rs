//! Generates a synthetic diving dataset, writes it to a directory and shows the
//! somersault signal in the first pose coefficient.

use actionscope::action_parse::{AttributeSchema, SOMERSAULT};
use actionscope::data_io::{save_clips, synth_generate, SynthConfig};
use actionscope::kinematics::SkeletonDef;

fn sign_changes(x: &[f64]) -> usize {
    x.windows(2)
        .filter(|w| w[0].signum() != w[1].signum())
        .count()
}

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/synthetic".into());
    let schema = AttributeSchema::diving();
    let config = SynthConfig {
        clips: 20,
        ..SynthConfig::default()
    };
    let out = synth_generate(&schema, &SkeletonDef::standard(), None, &config)?;
    std::fs::create_dir_all(&dir)?;
    save_clips(format!("{dir}/clips.json"), &out.clips)?;
    for s in &out.spaces {
        s.save(format!("{dir}/{}.json", s.submotion))?;
    }

    for clip in out.clips.iter().take(6) {
        let pc1: Vec<f64> = clip
            .frames
            .iter()
            .filter(|f| f.submotion == "somersault")
            .map(|f| f.alpha.as_ref().unwrap()[0])
            .collect();
        println!(
            "action {:2} somersault class {} -> {} sign changes of PC1 over {} frames",
            clip.action,
            clip.attributes[SOMERSAULT],
            sign_changes(&pc1),
            pc1.len()
        );
    }
    println!("wrote {} clips to {dir}", out.clips.len());
    Ok(())
}
