// Usage: cargo run --release --example teach_user_model
//
// Teaches a two-class model from highlighted samples with the joint loss,
// then looks at confidences, the class activation map and blended saliency.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deictic::datamgmt::TeachingSample;
use deictic::imaging::{codec, overlay_highlight};
use deictic::nn::BackboneId;
use deictic::synth::class_object_frame;
use deictic::teachtrain::{
    evaluate_user_model, joint_loss, train_user_model_with_classes, ClassDef, SegTerm, UserTrainConfig,
};

fn main() -> deictic::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut samples = Vec::new();
    for class in 0..2 {
        for k in 0..6 {
            let id = format!("c{class}-{k}");
            let s = class_object_frame(&mut rng, class, 64, 64, &id);
            samples.push(TeachingSample::new(id, class, s.frame, Some(s.objects[0].to_soft()), "demo")?);
        }
    }

    // the loss on its own: a 2-class, 1-pixel case
    let target = deictic::imaging::BinaryMask::ones(1, 1);
    let l = joint_loss(&[0.0, 0.0], 0, Some(SegTerm { logits: &[0.0], target: &target }), 1.0)?;
    println!("joint loss at zero logits: cls {:.4} + seg {:.4} = {:.4}", l.cls, l.seg.unwrap_or(0.0), l.total);

    let config = UserTrainConfig {
        backbone: BackboneId::TinyCnn,
        pretrained_encoder: false,
        input_size: (64, 64),
        epochs: 60,
        lr: 2e-3,
        ..Default::default()
    };
    let classes = vec![ClassDef::new(0, "mug"), ClassDef::new(1, "book")];
    let model = train_user_model_with_classes(classes, &samples, &config, 1.0, |e, loss| {
        if e % 10 == 0 {
            println!("epoch {e:3} loss {loss:.4}");
        }
    })?;
    let eval = evaluate_user_model(&model, &samples)?;
    println!(
        "train accuracy {:.2}, train mIoU {:.3}",
        eval.accuracy,
        eval.segmentation.as_ref().map_or(f64::NAN, |r| r.miou)
    );

    let probe = class_object_frame(&mut rng, 1, 64, 64, "probe");
    for lambda in [0.0, model.lambda_blend(), 1.0] {
        let p = model.predict(&probe.frame, lambda)?;
        let mean = p.saliency.values().iter().sum::<f32>() / p.saliency.values().len() as f32;
        println!(
            "blend {lambda:.3}: predicted {} {:?}, mean saliency {mean:.3}",
            model.classes()[p.predicted_class].label,
            p.confidences.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>()
        );
    }

    let p = model.predict(&probe.frame, model.lambda_blend())?;
    let dir = std::env::temp_dir();
    for (name, mask) in [("cam", &p.cam), ("saliency", &p.saliency)] {
        let path = dir.join(format!("deictic-{name}.png"));
        codec::write_atomic(&path, &codec::encode_frame_png(&overlay_highlight(&probe.frame, mask, [255, 0, 0], 0.7)?)?)?;
        println!("{name} overlay: {}", path.display());
    }
    Ok(())
}
