//! Shared fixtures for the CLI integration tests: a synthetic project
//! directory with one registered dataset per annotation style, plus helpers
//! to invoke the built binary.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use medcurate_core::ingest::{AnnotationStyle, DatasetRegistration, Registry};
use medcurate_core::sample::{
    media_placeholder, AnswerOption, ConversationTurn, Language, MediaRef, ModalityTag,
    SourceRecordRef, SynthesisStrategy, TaskKind, VqaSample,
};

pub fn medcurate(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medcurate"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "info")
        .output()
        .expect("medcurate binary runs")
}

pub fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exited normally")
}

pub fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn stdout_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn write_png(path: &Path, w: u32, h: u32, shade: u8) {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).unwrap();
    }
    image::GrayImage::from_pixel(w, h, image::Luma([shade])).save(path).unwrap();
}

pub const BASE_CONFIG: &str = r#"[pipeline]
registry = "registry.json"
media_root = "."
seed = 7
output_root = "out"

[synthesize]
distractors = 3
slice_count = 4

[evaluate]
benchmark = "demo"
metrics = ["accuracy"]
"#;

/// Writes `pipeline.toml` (or a named variant) under `root`.
pub fn write_config(root: &Path, name: &str, contents: &str) -> PathBuf {
    let path = root.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

/// Lays out manifests, media, and a registry for five small datasets:
/// 3 caption rows, 4 label rows, 2 mask rows, 1 volume, 2 video rows.
pub fn build_project(root: &Path) {
    std::fs::create_dir_all(root.join("media")).unwrap();

    let mut caps = String::from("key,image,caption\n");
    for i in 0..3 {
        write_png(&root.join(format!("media/cap{i}.png")), 448, 448, 40 + i as u8);
        caps.push_str(&format!(
            "cap{i},media/cap{i}.png,Frontal radiograph with a small left pleural effusion case {i}\n"
        ));
    }
    std::fs::write(root.join("caps.csv"), caps).unwrap();

    let vocabulary = ["nevus", "melanoma", "basal cell carcinoma", "actinic keratosis"];
    let mut labels = String::from("key,image,label\n");
    for i in 0..4 {
        write_png(&root.join(format!("media/lab{i}.png")), 300, 500, 90 + i as u8);
        labels.push_str(&format!("lab{i},media/lab{i}.png,{}\n", vocabulary[i % 4]));
    }
    std::fs::write(root.join("labels.csv"), labels).unwrap();

    let mut masks = String::from("key,image,width,height,x0,y0,x1,y1,region_label\n");
    for i in 0..2 {
        write_png(&root.join(format!("media/msk{i}.png")), 512, 512, 120 + i as u8);
        let label = if i == 0 { "lesion" } else { "" };
        masks.push_str(&format!("msk{i},media/msk{i}.png,512,512,50,60,150,200,{label}\n"));
    }
    std::fs::write(root.join("masks.csv"), masks).unwrap();

    let vol_dir = root.join("media/vol0");
    std::fs::create_dir_all(&vol_dir).unwrap();
    std::fs::write(vol_dir.join("volume.json"), r#"{"depth":6,"spacing":[1.0,1.0,2.5]}"#)
        .unwrap();
    for z in 0..6 {
        write_png(&vol_dir.join(format!("z{z:04}.png")), 64, 64, z as u8);
    }
    std::fs::write(
        root.join("vols.csv"),
        "key,volume_dir,answer,question\n\
         vol0,media/vol0,hepatic cyst in segment four,What abnormality is present?\n",
    )
    .unwrap();

    let mut videos = String::from("key,video,frame_count,fps,width,height,caption\n");
    for i in 0..2 {
        videos.push_str(&format!(
            "vid{i},media/clip{i}.mp4,120,30,640,480,Ultrasound sweep over the gallbladder pass {i}\n"
        ));
    }
    std::fs::write(root.join("videos.csv"), videos).unwrap();

    let mut registry = Registry::open(root.join("registry.json")).unwrap();
    let datasets = [
        ("caps", ModalityTag::Xray, AnnotationStyle::Caption, "caps.csv", None),
        (
            "skin",
            ModalityTag::Dermoscopy,
            AnnotationStyle::Label,
            "labels.csv",
            Some(vocabulary.iter().map(|s| s.to_string()).collect::<Vec<_>>()),
        ),
        ("chest-masks", ModalityTag::Xray, AnnotationStyle::Mask, "masks.csv", None),
        ("ct-vols", ModalityTag::Ct, AnnotationStyle::Volume, "vols.csv", None),
        ("us-videos", ModalityTag::Ultrasound, AnnotationStyle::Video, "videos.csv", None),
    ];
    for (name, modality, style, manifest, label_vocabulary) in datasets {
        registry
            .register(DatasetRegistration {
                name: name.into(),
                modality,
                style,
                manifest_path: manifest.into(),
                label_vocabulary,
            })
            .unwrap();
    }

    write_config(root, "pipeline.toml", BASE_CONFIG);
}

/// A hand-built four-option MCQ sample with gold option B.
pub fn mcq_sample(id: &str) -> VqaSample {
    let options = ["pneumonia", "pneumothorax", "pleural effusion", "cardiomegaly"];
    let stem = format!(
        "{} Which finding is present?\nA. {}\nB. {}\nC. {}\nD. {}",
        media_placeholder(0),
        options[0],
        options[1],
        options[2],
        options[3]
    );
    VqaSample {
        id: id.into(),
        task: TaskKind::Mcq,
        modality: ModalityTag::Xray,
        language: Language::En,
        media: vec![MediaRef::image("media/cap0.png")],
        turns: vec![ConversationTurn::human(stem), ConversationTurn::assistant("B")],
        answer_space: Some(
            options
                .iter()
                .enumerate()
                .map(|(i, text)| AnswerOption {
                    label: char::from(b'A' + i as u8).to_string(),
                    text: text.to_string(),
                    correct: i == 1,
                })
                .collect(),
        ),
        provenance: SourceRecordRef {
            dataset: "synthetic".into(),
            key: id.into(),
            strategy: SynthesisStrategy::Template,
        },
    }
}
