//! Short training run on the tiny preset, checkpointed and resumed.

use postgan::training::{generate_corpus, load_dataset, CorpusSpec, ExperimentConfig, Trainer};

fn main() -> postgan::Result<()> {
    let dir = std::env::temp_dir().join("postgan_train_example");
    let _ = std::fs::remove_dir_all(&dir);
    let manifest = generate_corpus(dir.join("corpus"), CorpusSpec { items: 4, seconds: 1.0, seed: 1 })?;
    let ds = load_dataset(&manifest)?;

    let mut cfg = ExperimentConfig::preset("tiny")?;
    cfg.train.pretrain_steps = 20;
    cfg.train.adversarial_steps = 10;
    cfg.train.lr_switch_epoch = 5;
    cfg.train.checkpoint_every = 10;

    let mut trainer = Trainer::new(cfg, ds.len())?;
    trainer.set_schedule(20, 0)?;
    let reports = trainer.run(&ds, &dir)?;
    println!("pretrain: L_aux {:.3} -> {:.3}", reports[0].l_aux, reports[reports.len() - 1].l_aux);

    let ckpt = postgan::training::checkpoint_path(&dir);
    let mut resumed = Trainer::load(&ckpt)?;
    resumed.set_schedule(20, 10)?;
    for r in resumed.run(&ds, &dir)?.iter().step_by(3) {
        println!("step {} {} aux {:.3} D {:.4} real {:+.2e} fake {:+.2e}", r.step, r.phase, r.l_aux, r.d_loss.unwrap_or(0.0), r.real_score.unwrap_or(0.0), r.fake_score.unwrap_or(0.0));
    }
    println!("log and checkpoint in {}", dir.display());
    Ok(())
}
