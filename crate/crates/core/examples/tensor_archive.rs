//! Writes an FQTA archive with a float and an integer tensor, reads it back.

use flattenquant::tensor_io::{read_archive, write_archive};
use flattenquant::{IntMatrix, Matrix, Tensor, TensorArchive};

fn main() -> flattenquant::Result<()> {
    let mut archive = TensorArchive::new();
    archive.insert_matrix("weight", Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.25))?;
    archive.insert_int("codes", IntMatrix::new(2, 2, vec![-7, 3, 0, 127])?)?;

    let dir = std::env::temp_dir().join("flattenquant-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("demo.fqta");
    write_archive(&archive, &path)?;

    let back = read_archive(&path)?;
    for (name, t) in back.entries() {
        let kind = match t {
            Tensor::F64(_) => "f64",
            Tensor::I32(_) => "i32",
        };
        println!("{name}: {kind} {:?}", t.shape());
    }
    println!("{} bytes on disk, round trip equal: {}", archive.to_bytes().len(), back == archive);
    Ok(())
}
