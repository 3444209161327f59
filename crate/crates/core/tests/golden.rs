mod support;

use support::{golden_dir, scenes};

#[test]
fn renders_match_goldens() {
    let dir = golden_dir();
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    if update {
        std::fs::create_dir_all(&dir).unwrap();
    }
    for (name, img) in scenes::all() {
        let path = dir.join(name);
        if update {
            img.save(&path).unwrap();
            continue;
        }
        let golden = image::open(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display())).to_rgb8();
        assert_eq!(golden.dimensions(), img.dimensions(), "{name}");
        let diff = golden.pixels().zip(img.pixels()).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 0, "{name}: {diff} pixels differ");
    }
}

#[test]
fn unannotated_frame_is_untouched() {
    let (image, mut ann) = scenes::annotated_frame();
    ann.persons.clear();
    let colors = online_mmsi::visual::assign_colors(3).unwrap();
    let out = online_mmsi::visual::render_overlay(&image, &ann, &colors, &Default::default()).unwrap();
    assert_eq!(out.as_raw(), image.as_raw());
    assert_eq!(scenes::png_bytes(&out), scenes::png_bytes(&image));
}
