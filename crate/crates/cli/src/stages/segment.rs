//! `segment`: run the trained net over every tomogram orthoslice and write
//! the labelled volume.

use xfct::error::Result;
use xfct::io::checkpoint::read_checkpoint;
use xfct::io::container::{read_volume, write_label_volume};
use xfct::segnet::segment_volume;

use crate::artifacts::require;
use crate::stages::Context;

pub fn run(ctx: &Context) -> Result<()> {
    require(&ctx.paths.model(), "segment", "train")?;
    require(&ctx.paths.ct(), "segment", "simulate")?;
    let net = read_checkpoint(&ctx.paths.model())?.into_model()?;
    let (ct, _) = read_volume(&ctx.paths.ct())?;
    let labels = segment_volume(&net, &ct)?;
    write_label_volume(&ctx.paths.segmented(), &labels, Some(&ctx.provenance("segment")))?;
    let [nz, ny, nx] = labels.grid().dims;
    println!("[segment] labelled {nz}x{ny}x{nx} voxels with {} classes", net.config().classes);
    Ok(())
}
