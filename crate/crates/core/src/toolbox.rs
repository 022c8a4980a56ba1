//! The desk toolbox: tool signatures and deterministic mock behavior.
//!
//! Signatures are engine-defined. Mock tools do no media processing; media
//! outputs are small tagged text payloads written under a file name derived
//! from the inputs, and inline outputs are deterministic string transforms.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::graph::{ArgSpec, ToolSpec};
use crate::types::{ResourceType, Vocabulary};

/// (name, domain, description, args, return type)
type Row = (&'static str, &'static str, &'static str, &'static [&'static str], &'static str);

const DESK_TOOLS: &[Row] = &[
    ("question_answering", "question-answering",
     "answers a question in text form using general knowledge", &["text"], "text"),
    ("image_question_answering", "question-answering",
     "answers a question about the content of an image", &["image", "text"], "text"),
    ("summarization", "natural-language-processing",
     "summarizes a long text into a short summary", &["text"], "text"),
    ("title_generation", "natural-language-processing",
     "writes a title for a text", &["text"], "text"),
    ("text_to_tags", "natural-language-processing",
     "extracts keyword tags from a text", &["text"], "tags"),
    ("text_to_text_generation", "natural-language-processing",
     "rewrites or continues a text following an instruction", &["text"], "text"),
    ("sentiment_analysis", "natural-language-processing",
     "classifies the sentiment of a text", &["text"], "category"),
    ("object_detection", "image-perception",
     "detects objects in an image and returns their bounding boxes", &["image"], "bbox"),
    ("image_captioning", "image-perception",
     "generates a caption that describes an image", &["image"], "text"),
    ("visual_grounding", "image-perception",
     "locates the object described by a text in an image and returns its bounding box", &["image", "text"], "bbox"),
    ("image_classification", "image-perception",
     "classifies an image into a category", &["image"], "category"),
    ("segment_anything", "image-perception",
     "segments everything in an image into a segmentation map", &["image"], "segmentation"),
    ("instance_segmentation", "image-perception",
     "segments the object named by a text and returns its mask", &["image", "text"], "mask"),
    ("segment_by_points", "image-perception",
     "segments the object under the given points and returns its mask", &["image", "point"], "mask"),
    ("text_to_image", "image-generation",
     "generates an image from a text prompt", &["text"], "image"),
    ("image_to_image", "image-generation",
     "generates a new image with a layout similar to the given image", &["image", "text"], "image"),
    ("line_text_to_image", "image-generation",
     "generates an image conditioned on a line drawing and a text prompt", &["line", "text"], "image"),
    ("hed_text_to_image", "image-generation",
     "generates an image conditioned on a hed boundary map and a text prompt", &["hed", "text"], "image"),
    ("scribble_text_to_image", "image-generation",
     "generates an image conditioned on a scribble and a text prompt", &["scribble", "text"], "image"),
    ("pose_text_to_image", "image-generation",
     "generates an image conditioned on a human pose and a text prompt", &["pose", "text"], "image"),
    ("segmentation_text_to_image", "image-generation",
     "generates an image conditioned on a segmentation map and a text prompt", &["segmentation", "text"], "image"),
    ("edge_text_to_image", "image-generation",
     "generates an image conditioned on an edge map and a text prompt", &["edge", "text"], "image"),
    ("depth_text_to_image", "image-generation",
     "generates an image conditioned on a depth map and a text prompt", &["depth", "text"], "image"),
    ("normal_text_to_image", "image-generation",
     "generates an image conditioned on a normal map and a text prompt", &["normal", "text"], "image"),
    ("text_image_editing", "image-editing",
     "edits an image following a text instruction, e.g. remove or replace an object", &["image", "text"], "image"),
    ("image_inpainting", "image-editing",
     "erases the masked region of an image and fills it in", &["image", "mask"], "image"),
    ("image_cropping", "image-editing",
     "crops the region inside a bounding box out of an image", &["image", "bbox"], "image"),
    ("mask_image", "image-editing",
     "applies a mask to an image keeping only the masked region", &["image", "mask"], "image"),
    ("highlight_object_on_image", "image-editing",
     "draws a bounding box on an image to highlight an object", &["image", "bbox"], "image"),
    ("image_to_edge", "image-processing",
     "extracts the canny edge map of an image", &["image"], "edge"),
    ("image_to_line", "image-processing",
     "extracts the straight line drawing of an image", &["image"], "line"),
    ("image_to_hed", "image-processing",
     "extracts the hed soft boundary map of an image", &["image"], "hed"),
    ("image_to_scribble", "image-processing",
     "extracts a scribble sketch of an image", &["image"], "scribble"),
    ("image_to_pose", "image-processing",
     "estimates the human pose skeleton in an image", &["image"], "pose"),
    ("image_to_depth", "image-processing",
     "estimates the depth map of an image", &["image"], "depth"),
    ("image_to_normal", "image-processing",
     "estimates the surface normal map of an image", &["image"], "normal"),
    ("video_classification", "video-perception",
     "classifies a video into a category", &["video"], "category"),
    ("video_captioning", "video-perception",
     "generates a caption that describes a video", &["video"], "text"),
    ("dub_video", "video-processing",
     "dubs a video with the given audio track", &["video", "audio"], "video"),
    ("video_to_webpage", "video-processing",
     "builds a webpage that presents a video with a text introduction", &["video", "text"], "html"),
    ("image_audio_to_video", "video-generation",
     "makes a video from an image and an audio track", &["image", "audio"], "video"),
    ("image_to_video", "video-generation",
     "animates an image into a short video", &["image"], "video"),
    ("text_to_video", "video-generation",
     "generates a video from a text prompt", &["text"], "video"),
    ("audio_classification", "audio-perception",
     "classifies the sound in an audio clip", &["audio"], "category"),
    ("text_to_music", "audio-generation",
     "composes music from a text description", &["text"], "audio"),
    ("text_to_speech", "audio-generation",
     "reads a text aloud and returns the speech audio", &["text"], "audio"),
    ("audio_to_audio", "audio-generation",
     "transforms an audio clip, e.g. denoising or voice conversion", &["audio"], "audio"),
];

/// The built-in desk toolbox, sorted by tool name.
pub fn default_registry() -> Vec<ToolSpec> {
    let vocab = Vocabulary::builtin();
    let ty = |n: &str| vocab.resource_type(n).expect("desk toolbox uses built-in types");
    let mut tools: Vec<ToolSpec> = DESK_TOOLS
        .iter()
        .map(|(name, domain, desc, args, ret)| {
            let args = args
                .iter()
                .map(|a| ArgSpec::new(*a, ty(a)))
                .collect();
            ToolSpec::new(
                *name,
                *desc,
                alloc::vec![vocab.domain(domain).expect("built-in domain")],
                args,
                ArgSpec::new(*ret, ty(ret)),
            )
            .expect("desk toolbox entries are valid")
        })
        .collect();
    tools.sort_by(|a, b| a.name.cmp(&b.name));
    tools
}

/// An input handed to a mock tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockInput<'a> {
    pub name: &'a str,
    pub rtype: &'a ResourceType,
    pub value: &'a str,
}

/// What a mock tool produces. `payload` is set for media outputs and holds
/// the bytes to be written to `value` (a file name).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockOutput {
    pub value: String,
    pub payload: Option<Vec<u8>>,
}

/// Deterministic mock behavior for any tool spec.
pub fn mock_output(tool: &ToolSpec, inputs: &[MockInput<'_>]) -> MockOutput {
    let ret = &tool.ret.rtype;
    let digest = inputs_digest(tool, inputs);
    if ret.is_inline() {
        let joined = inputs
            .iter()
            .filter(|i| i.rtype.is_inline())
            .map(|i| i.value)
            .collect::<Vec<_>>()
            .join(" | ");
        let value = match ret.name() {
            "bbox" => format!(
                "[{}, {}, {}, {}]",
                digest % 97,
                (digest >> 8) % 97,
                100 + (digest >> 16) % 156,
                100 + (digest >> 24) % 156
            ),
            "point" => format!("[{}, {}]", digest % 256, (digest >> 8) % 256),
            "category" => format!("category-{:04x}", digest & 0xffff),
            "tags" => format!("tags: {}", tool.name),
            _ if joined.is_empty() => format!("{}: output-{:08x}", tool.name, digest as u32),
            _ => format!("{}: {}", tool.name, joined),
        };
        return MockOutput {
            value,
            payload: None,
        };
    }

    let media: Vec<&MockInput<'_>> = inputs.iter().filter(|i| !i.rtype.is_inline()).collect();
    let prefix = tool
        .name
        .strip_prefix("image_to_")
        .unwrap_or(tool.name.as_str());
    let mut name = String::from(prefix);
    if let Some(first) = media.first() {
        name.push('_');
        name.push_str(file_stem(first.value));
    }
    if inputs.len() > 1 || media.is_empty() {
        let _ = write!(name, "_{:08x}", digest as u32);
    }
    name.push('.');
    name.push_str(extension_for(ret));

    let mut payload = format!("TOG-MOCK {}\ntool: {}\n", ret, tool.name);
    for i in inputs {
        let _ = writeln!(payload, "input {} ({}): {}", i.name, i.rtype, i.value);
    }
    MockOutput {
        value: name,
        payload: Some(payload.into_bytes()),
    }
}

pub fn extension_for(rtype: &ResourceType) -> &'static str {
    match rtype.name() {
        "audio" => "wav",
        "video" => "mp4",
        "html" => "html",
        "text" | "tags" | "category" | "point" | "bbox" => "txt",
        _ => "png",
    }
}

/// File name without directories or extension.
pub fn file_stem(path: &str) -> &str {
    let base = path.rsplit(['/', '\\']).next().unwrap_or(path);
    match base.rfind('.') {
        Some(0) | None => base,
        Some(pos) => &base[..pos],
    }
}

fn inputs_digest(tool: &ToolSpec, inputs: &[MockInput<'_>]) -> u64 {
    // FNV-1a
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        hash ^= 0xff;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    };
    feed(tool.name.as_bytes());
    for i in inputs {
        feed(i.name.as_bytes());
        feed(i.value.as_bytes());
    }
    hash
}
