use revox_core::corpus::synthesize_utterance;
use revox_core::dsp::{mel_spectrogram, MelConfig};
use revox_core::encoders::{EncoderArch, ToyContentEncoder, ToySpeakerEncoder};
use revox_core::losses::std_vector;
use revox_core::model::{ModelConfig, VcModel};
use revox_core::nn::Adam;
use revox_core::training::{train_step, Dataset, TrainItem, TrainingConfig};
use std::time::Instant;

fn main() {
    let arch = EncoderArch::default();
    let content_enc = ToyContentEncoder::new(&arch, 1);
    let speaker_enc = ToySpeakerEncoder::new(&arch, 2);
    let mel_cfg = MelConfig::default();

    let mut items = Vec::new();
    for s in 0..4 {
        for u in 0..2 {
            let w = synthesize_utterance(7, s, u);
            let mel = mel_spectrogram(&w, &mel_cfg).unwrap();
            let content = content_enc.extract(&mel).unwrap();
            let spk = speaker_enc.embed(&mel).unwrap();
            let std_row = std_vector(&mel.values).insert_axis(ndarray::Axis(0));
            items.push(TrainItem {
                utterance_id: format!("s{s}u{u}"),
                speaker_id: format!("s{s}"),
                mel, content, spk, std_row,
            });
        }
    }
    println!("frames per item: {:?}", items.iter().map(|i| i.mel.num_frames()).collect::<Vec<_>>());
    let data = Dataset { items };

    let cfg = TrainingConfig { batch_size: 4, max_steps: 10, seed: 3, ..Default::default() };
    let mut model = VcModel::new(&ModelConfig::default(), 5);
    println!("model params: {}", model.store().num_scalars());
    let mut opt = Adam::new(model.store(), cfg.adam());

    let t0 = Instant::now();
    for step in 1..=6u64 {
        let t1 = Instant::now();
        let m = train_step(step, &mut model, &mut opt, &data, &speaker_enc, &cfg).unwrap();
        println!("step {step}: total={:.4} wall={:.0}ms ({:.0}ms measured)", m.losses.total, t1.elapsed().as_secs_f64()*1e3, m.wall_time_ms);
    }
    println!("avg: {:.0} ms/step", t0.elapsed().as_secs_f64() / 6.0 * 1e3);
}
