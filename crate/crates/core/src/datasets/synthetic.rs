use super::{one_hot, Dataset, Samples};

/// The four XOR pairs; train and test are both the full truth table.
pub fn make_xor() -> Dataset {
    let inputs = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let targets = [[0.0], [1.0], [1.0], [0.0]];
    let s = Samples::from_rows(&inputs, &targets).expect("static table");
    Dataset::new("xor", s.clone(), s).expect("static table")
}

/// 32 images of 4×4 pixels: 16 stripes (each row repeats a 4-bit pattern,
/// class 0) then 16 bars (each column repeats it, class 1). The all-black and
/// all-white images occur once in each class.
pub fn make_bars_stripes() -> Dataset {
    let mut s = Samples::new(16, 2);
    for (class, by_rows) in [(0, true), (1, false)] {
        for pattern in 0..16u32 {
            let bit = |i: usize| f64::from((pattern >> (3 - i)) & 1);
            let mut img = [0.0; 16];
            for r in 0..4 {
                for c in 0..4 {
                    img[r * 4 + c] = if by_rows { bit(c) } else { bit(r) };
                }
            }
            s.push(&img, &one_hot(class, 2)).expect("fixed widths");
        }
    }
    Dataset::new("bars_stripes", s.clone(), s).expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_table() {
        let d = make_xor();
        assert_eq!(d.train.len(), 4);
        let lookup = |a: f64, b: f64| {
            d.train.iter().find(|(i, _)| i == &[a, b]).map(|(_, t)| t[0]).unwrap()
        };
        assert_eq!(lookup(1.0, 0.0), 1.0);
        assert_eq!(lookup(1.0, 1.0), 0.0);
        assert_eq!(lookup(0.0, 0.0), 0.0);
        assert_eq!(lookup(0.0, 1.0), 1.0);
        assert_eq!(d.train, d.test);
    }

    #[test]
    fn stripe_1010() {
        let d = make_bars_stripes();
        let img = d.train.input(0b1010);
        for r in 0..4 {
            assert_eq!(&img[r * 4..r * 4 + 4], &[1.0, 0.0, 1.0, 0.0]);
        }
        assert_eq!(d.train.target(0b1010), &[1.0, 0.0]);
    }

    #[test]
    fn count_and_duplicates() {
        let d = make_bars_stripes();
        assert_eq!(d.train.len(), 32);
        let zeros: Vec<&[f64]> = d
            .train
            .iter()
            .filter(|(i, _)| i.iter().all(|&v| v == 0.0))
            .map(|(_, t)| t)
            .collect();
        assert_eq!(zeros, vec![&[1.0, 0.0][..], &[0.0, 1.0][..]]);
    }
}
