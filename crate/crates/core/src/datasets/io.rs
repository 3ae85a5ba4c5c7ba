//! Plain-text dataset files.
//!
//! ```text
//! omx-dataset,v1,<input_dim>,<C_l>,<C_u>
//! L,<class>,<feat_0>,...
//! U,<hidden class>,<feat_0>,...
//! ```
//!
//! Floats are written in shortest round-trip form so a load after a save is
//! bit-exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Mat;

use super::{Dataset, HiddenTruth, LabeledSet, UnlabeledSet};

const MAGIC: &str = "omx-dataset";
const VERSION: &str = "v1";

pub fn write_dataset<W: Write>(out: &mut W, data: &Dataset) -> std::io::Result<()> {
    writeln!(
        out,
        "{MAGIC},{VERSION},{},{},{}",
        data.input_dim(),
        data.old_classes(),
        data.new_classes()
    )?;
    let mut row = |kind: char, class: usize, x: &[f64]| -> std::io::Result<()> {
        write!(out, "{kind},{class}")?;
        for v in x {
            write!(out, ",{v}")?;
        }
        writeln!(out)
    };
    for i in 0..data.labeled.len() {
        let ex = data.labeled.get(i);
        row('L', ex.class, ex.x)?;
    }
    let truth = data.truth.all();
    for (id, &class) in truth.iter().enumerate() {
        row('U', class, data.unlabeled.get(id))?;
    }
    Ok(())
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(&mut w, data)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

pub fn parse_dataset(text: &str, origin: &Path) -> Result<Dataset> {
    let fail = |line: usize, message: String| Error::Format {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| fail(1, "missing header line".into()))?;
    let fields: Vec<&str> = header.trim().split(',').collect();
    if fields.len() != 5 || fields[0] != MAGIC || fields[1] != VERSION {
        return Err(fail(
            1,
            format!("expected header `{MAGIC},{VERSION},input_dim,C_l,C_u`, got `{header}`"),
        ));
    }
    let dim = |i: usize, name: &str| -> Result<usize> {
        fields[i]
            .parse()
            .map_err(|_| fail(1, format!("bad {name} `{}`", fields[i])))
    };
    let input_dim = dim(2, "input_dim")?;
    let old_classes = dim(3, "C_l")?;
    let new_classes = dim(4, "C_u")?;

    let mut xl = Vec::new();
    let mut yl = Vec::new();
    let mut xu = Vec::new();
    let mut yu = Vec::new();
    for (line_no, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let kind = parts.next().unwrap_or("");
        let (limit, xs, ys) = match kind {
            "L" => (old_classes, &mut xl, &mut yl),
            "U" => (new_classes, &mut xu, &mut yu),
            other => return Err(fail(line_no, format!("row kind must be L or U, got `{other}`"))),
        };
        let class_field = parts
            .next()
            .ok_or_else(|| fail(line_no, "missing class index".into()))?;
        let class: usize = class_field
            .parse()
            .map_err(|_| fail(line_no, format!("bad class index `{class_field}`")))?;
        if class >= limit {
            return Err(fail(
                line_no,
                format!("class index {class} out of range for {limit} classes"),
            ));
        }
        let start = xs.len();
        for field in parts {
            let v: f64 = field
                .parse()
                .map_err(|_| fail(line_no, format!("bad feature value `{field}`")))?;
            if !v.is_finite() {
                return Err(fail(line_no, format!("non-finite feature `{field}`")));
            }
            xs.push(v);
        }
        if xs.len() - start != input_dim {
            return Err(fail(
                line_no,
                format!("expected {input_dim} features, got {}", xs.len() - start),
            ));
        }
        ys.push(class);
    }
    let labeled = LabeledSet::new(old_classes, Mat::from_vec(yl.len(), input_dim, xl)?, yl)?;
    let unlabeled = UnlabeledSet::new(new_classes, Mat::from_vec(yu.len(), input_dim, xu)?);
    Dataset::new(labeled, unlabeled, HiddenTruth::new(yu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_blobs, SplitSpec};

    fn to_text(d: &Dataset) -> String {
        let mut buf = Vec::new();
        write_dataset(&mut buf, d).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text, Path::new("data.csv"))
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let d = Dataset::new(
            LabeledSet::new(2, Mat::zeros(0, 3), vec![]).unwrap(),
            UnlabeledSet::new(2, Mat::zeros(0, 3)),
            HiddenTruth::new(vec![]),
        )
        .unwrap();
        let text = to_text(&d);
        assert_eq!(text, "omx-dataset,v1,3,2,2\n");
        assert_eq!(parse(&text).unwrap(), d);
    }

    #[test]
    fn single_example_roundtrips_bit_exactly() {
        let x = vec![0.1, -0.0, 1e-300, std::f64::consts::PI];
        let d = Dataset::new(
            LabeledSet::new(1, Mat::from_vec(1, 4, x.clone()).unwrap(), vec![0]).unwrap(),
            UnlabeledSet::new(2, Mat::zeros(0, 4)),
            HiddenTruth::new(vec![]),
        )
        .unwrap();
        let back = parse(&to_text(&d)).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.labeled.features().as_slice()), bits(&x));
    }

    #[test]
    fn generated_set_roundtrips() {
        let spec = SplitSpec {
            samples_per_class: 100,
            seed: 5,
            ..SplitSpec::default()
        };
        let d = generate_blobs(&spec).unwrap().dataset;
        assert_eq!(d.labeled.len() + d.unlabeled.len(), 1000);
        let back = parse(&to_text(&d)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("nope,v1,2,1,2\n", 1),
            ("omx-dataset,v1,2,1,2\nL,0,1.0\n", 2),
            ("omx-dataset,v1,2,1,2\nL,0,1,2\nU,2,1,2\n", 3),
            ("omx-dataset,v1,2,1,2\nL,1,1,2\n", 2),
            ("omx-dataset,v1,2,1,2\nX,0,1,2\n", 2),
            ("omx-dataset,v1,2,1,2\nL,0,1,abc\n", 2),
            ("omx-dataset,v1,2,1,2\nU,0,1,2\nU,0,inf,2\n", 3),
        ];
        for (text, line) in cases {
            match parse(text) {
                Err(Error::Format { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("expected format error for {text:?}, got {other:?}"),
            }
        }
    }
}
