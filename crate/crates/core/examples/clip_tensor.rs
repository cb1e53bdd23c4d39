//! Raw clip tensor cache: 16-byte header, little-endian f32 frames and a JSON
//! sidecar holding the frame rate.

use rppg::io::{encode_clip_tensor, read_clip, write_clip};
use rppg::synth::{synth_session, HrTrajectory, SynthSpec};

fn main() -> rppg::Result<()> {
    let mut spec = SynthSpec::new(HrTrajectory::constant(72.0, 2.0)?);
    spec.size = 64;
    let clip = synth_session(&spec, "tensor")?.video;
    let bytes = encode_clip_tensor(&clip)?;
    println!("header {:02x?}", &bytes[..16]);
    let dir = std::env::temp_dir();
    let path = write_clip(&dir, "rppg-clip", &clip)?;
    let back = read_clip(&path)?;
    println!("{} -> {} bytes, identical after reload: {}", path.display(), bytes.len(), back == clip);
    Ok(())
}
