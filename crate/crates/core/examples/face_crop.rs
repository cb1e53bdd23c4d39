//! 90 fps to 30 fps by frame averaging, then a padded square face crop
//! resized to 64x64.

use ndarray::Array4;
use rppg::preprocess::{padded_square, pixel_window, preprocess_session, CropSpec};
use rppg::{FaceRegion, LandmarkTrack, VideoClip};

fn main() -> rppg::Result<()> {
    let (t, h, w) = (90, 240, 320);
    let frames = Array4::from_shape_fn((t, h, w, 3), |(i, y, x, c)| {
        ((x + y + 7 * i + 50 * c) % 255) as f32 / 255.0
    });
    let clip = VideoClip::new(frames, 90.0)?;
    let face = [100.0, 60.0, 220.0, 200.0];
    let track = LandmarkTrack::Boxes(vec![face; t]);

    let spec = CropSpec::default();
    let square = padded_square(&FaceRegion::Box(face), &spec)?;
    println!("face box {face:?} -> padded square {square:?}");
    println!("pixel window {:?}", pixel_window(square, w, h));

    let out = preprocess_session(&clip, Some(&track), &spec, 30.0)?;
    println!(
        "{} frames at {} fps -> {} frames {}x{} at {} fps",
        clip.len(),
        clip.fps(),
        out.len(),
        out.height(),
        out.width(),
        out.fps()
    );
    Ok(())
}
