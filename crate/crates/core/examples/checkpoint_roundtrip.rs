//! Saves a LoRA-adapted model, loads it back and checks that logits and
//! parameters survive bit for bit.

use dforge::adapters::{attach_lora, LoraConfig};
use dforge::model::{load_checkpoint, save_checkpoint, MiniTransformer, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut model = MiniTransformer::init(&ModelConfig::student_xs(64), 5)?;
    attach_lora(&mut model, &LoraConfig::default(), 6)?;

    let dir = std::env::temp_dir().join("dforge-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.dfck");
    save_checkpoint(&model, &path)?;
    let loaded = load_checkpoint(&path)?;

    let tokens = [1, 5, 9, 12, 40, 7];
    let same_logits = model.logits(&tokens)?.data() == loaded.logits(&tokens)?.data();
    println!("{} bytes written to {}", std::fs::metadata(&path)?.len(), path.display());
    println!("tensors: {}", loaded.params().len());
    println!("digest before {:016x}, after {:016x}", model.params().digest(), loaded.params().digest());
    println!("parameters bit-identical: {}", model.params().bit_eq(loaded.params()));
    println!("logits identical: {same_logits}");
    println!("lora attached after load: {}", loaded.lora().is_some());
    Ok(())
}
