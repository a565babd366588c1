// Usage: cargo run --example polygon_masks
//
// Rasterizes polygon annotations, scores them with IoU and round-trips the
// result through the 8-bit PNG mask format.

use deictic::evalbench::{iou, miou};
use deictic::imaging::{codec, rasterize_polygons, PolygonAnnotation};

fn main() -> deictic::Result<()> {
    let square = vec![(4.0, 4.0), (20.0, 4.0), (20.0, 20.0), (4.0, 20.0)];
    let shifted = vec![(8.0, 6.0), (24.0, 6.0), (24.0, 22.0), (8.0, 22.0)];
    // two rings in one annotation are unioned
    let pair = PolygonAnnotation::new(vec![square.clone(), vec![(26.0, 2.0), (30.0, 10.0), (22.0, 10.0)]]);

    let a = rasterize_polygons(&PolygonAnnotation::new(vec![square]), 32, 24)?;
    let b = rasterize_polygons(&PolygonAnnotation::new(vec![shifted]), 32, 24)?;
    let c = rasterize_polygons(&pair, 32, 24)?;
    println!("square: {} px, shifted: {} px, square+triangle: {} px", a.count_ones(), b.count_ones(), c.count_ones());
    println!("IoU(square, shifted) = {:.4}", iou(&a, &b)?);
    println!("IoU(square, square+triangle) = {:.4}", iou(&a, &c)?);

    for y in 0..a.height() {
        let row: String = (0..a.width())
            .map(|x| match (a.get(x, y), b.get(x, y)) {
                (true, true) => '#',
                (true, false) => 'a',
                (false, true) => 'b',
                _ => '.',
            })
            .collect();
        println!("  {row}");
    }

    let png = codec::encode_mask_png(&a)?;
    assert_eq!(codec::decode_mask_png(&png)?, a);
    println!("mask PNG: {} bytes, decodes to the same mask", png.len());

    let report = miou(&[(b.to_soft(), a.clone()), (c.to_soft(), a)], 0.5)?;
    println!("mIoU over two predictions: {:.4} {:?}", report.miou, report.per_image_iou);
    Ok(())
}
