//! Write and read datasets (CSV and binary) and model files.

use fdr::prelude::*;

fn main() -> fdr::Result<()> {
    let dir = std::env::temp_dir().join("fdr-file-formats");
    std::fs::create_dir_all(&dir).map_err(|e| FdrError::InvalidArgument(e.to_string()))?;

    let data = gen_synthetic(&SyntheticSpec {
        n_total: 1000,
        ..Default::default()
    })?;
    let csv = dir.join("data.csv");
    let bin = dir.join("data.bin");
    save_dataset(&data, &csv, DataFormat::Csv)?;
    save_dataset(&data, &bin, DataFormat::Binary)?;
    for p in [&csv, &bin] {
        let back = load_dataset(p, DataFormat::from_path(p))?;
        let size = std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
        println!("{}: {size} bytes, {} rows, groups {:?}", p.display(), back.len(), back.group_counts().0);
    }
    let head_of_csv: String = std::fs::read_to_string(&csv).unwrap_or_default().lines().take(2).collect::<Vec<_>>().join("\n");
    println!("{head_of_csv}");

    let head = init_head(&HeadDims::new(data.dim(), vec![8])?, 0)?.freeze_all_but_last();
    let model = dir.join("head.fdr");
    save_head(&head, &model)?;
    let back = load_head(&model)?;
    println!("model: dims {:?}, frozen {:?}", back.dims().widths(), back.freeze_mask());

    match load_dataset(dir.join("missing.csv"), DataFormat::Csv) {
        Err(e) => println!("missing file -> {}: {e}", e.kind()),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
