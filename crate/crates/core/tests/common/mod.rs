//! Synthetic packaging fixture: 60 products, 113 images, each image carrying
//! one planted field with a known anchor and a known body.

#![allow(dead_code)]

use ocrbench::corpus::{GroundTruthEntry, ImageRecord};
use ocrbench::FieldType;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PRODUCTS: usize = 60;
pub const IMAGES: usize = 113;

const INGREDIENT_ANCHORS: [&str; 4] = ["Ingredients:", "INGREDIENTS", "Bestanddele:", "Ingrediente:"];
const NFP_ANCHORS: [&str; 4] =
    ["NUTRITION INFORMATION", "Typical Nutritional Information", "Nutrition Facts", "Nutritional information:"];

const INGREDIENT_WORDS: [&str; 16] = [
    "sugar,",
    "salt,",
    "wheat flour,",
    "palm oil,",
    "water,",
    "maize starch,",
    "milk solids,",
    "soya lecithin (emulsifier),",
    "cocoa butter,",
    "yeast,",
    "vinegar,",
    "flavouring,",
    "citric acid,",
    "rice,",
    "barley malt,",
    "skimmed milk powder,",
];
const NFP_WORDS: [&str; 14] = [
    "per 100g",
    "energy 1520kj",
    "protein 7.2g",
    "glycaemic carbohydrate 60g",
    "of which total sugar 12g",
    "total fat 9.5g",
    "saturated fat 2.1g",
    "dietary fibre 3g",
    "total sodium 410mg",
    "per serving",
    "energy 380kj",
    "protein 1.8g",
    "total fat 2.4g",
    "calcium 120mg",
];
const FRONT_WORDS: [&str; 10] = [
    "CRUNCHY",
    "Family Pack",
    "net 500g",
    "NEW!",
    "Original",
    "** best value **",
    "brand",
    "Est. 1952",
    "500 ml",
    "ZA",
];

#[derive(Debug, Clone)]
pub struct FixtureImage {
    pub product_key: String,
    pub image_filename: String,
    pub field: FieldType,
    pub anchor: String,
    /// Raw text as an ideal engine would return it.
    pub raw_text: String,
    /// Body after the anchor, as transcribed.
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub images: Vec<FixtureImage>,
}

fn product_key(i: usize) -> String {
    format!("20230613_04_03_{:03}", i + 1)
}

fn pick_words(rng: &mut ChaCha8Rng, words: &[&str], min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    let mut chosen: Vec<&str> = words.choose_multiple(rng, n).copied().collect();
    chosen.shuffle(rng);
    chosen.join(" ")
}

impl Fixture {
    /// 53 products with both fields (one image each) and 7 with a single field.
    pub fn generate(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::with_capacity(IMAGES);
        for p in 0..PRODUCTS {
            let fields: Vec<FieldType> = if p < 53 {
                vec![FieldType::Ingredients, FieldType::Nfp]
            } else if p % 2 == 0 {
                vec![FieldType::Ingredients]
            } else {
                vec![FieldType::Nfp]
            };
            for (k, field) in fields.into_iter().enumerate() {
                let (anchor, body) = match field {
                    FieldType::Ingredients => (
                        INGREDIENT_ANCHORS.choose(&mut rng).unwrap().to_string(),
                        pick_words(&mut rng, &INGREDIENT_WORDS, 4, 10),
                    ),
                    FieldType::Nfp => {
                        (NFP_ANCHORS.choose(&mut rng).unwrap().to_string(), pick_words(&mut rng, &NFP_WORDS, 4, 9))
                    }
                };
                let front = pick_words(&mut rng, &FRONT_WORDS, 1, 3);
                let raw_text = format!("{front}  {anchor} {body}");
                images.push(FixtureImage {
                    product_key: product_key(p),
                    image_filename: format!("{} ({}).jpg", product_key(p), k + 2),
                    field,
                    anchor,
                    raw_text,
                    body,
                });
            }
        }
        assert_eq!(images.len(), IMAGES);
        Fixture { images }
    }

    /// A front-of-pack image without any field text for each product.
    pub fn front_images(&self) -> Vec<ImageRecord> {
        (0..PRODUCTS)
            .map(|p| ImageRecord {
                product_key: product_key(p),
                image_filename: format!("{} (1).jpg", product_key(p)),
                raw_text: "Brand CRUNCHY family pack net 500g".into(),
                time_seconds: Some(0.25),
            })
            .collect()
    }

    pub fn predictions(&self) -> Vec<ImageRecord> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, im)| ImageRecord {
                product_key: im.product_key.clone(),
                image_filename: im.image_filename.clone(),
                raw_text: im.raw_text.clone(),
                time_seconds: Some(0.5 + (i % 7) as f64 * 0.125),
            })
            .collect()
    }

    /// Predictions with OCR-style noise in the body: dropped words and
    /// character confusions. Anchors are left intact.
    pub fn noisy_predictions(&self, seed: u64) -> Vec<ImageRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.predictions();
        for (rec, im) in out.iter_mut().zip(&self.images) {
            let mut words: Vec<String> = Vec::new();
            for w in im.body.split(' ') {
                if rng.gen_bool(0.15) {
                    continue;
                }
                let w: String = w.chars().map(|c| if rng.gen_bool(0.05) { confuse(c) } else { c }).collect();
                words.push(w);
            }
            if rng.gen_bool(0.1) {
                // Engine returned nothing for this image.
                rec.raw_text = String::new();
            } else {
                rec.raw_text = format!("{} {}", im.anchor, words.join(" "));
            }
        }
        out
    }

    pub fn ground_truth(&self) -> Vec<GroundTruthEntry> {
        self.images
            .iter()
            .map(|im| GroundTruthEntry {
                product_key: im.product_key.clone(),
                image_filename: im.image_filename.clone(),
                field_type: im.field,
                gt_text: im.body.clone(),
            })
            .collect()
    }

    /// Same images with exactly one letter of each anchor replaced by a
    /// typical OCR confusion.
    pub fn corrupted_anchor_texts(&self, seed: u64) -> Vec<(FieldType, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.images
            .iter()
            .map(|im| {
                let chars: Vec<char> = im.anchor.chars().collect();
                let letters: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_alphabetic()).collect();
                let pos = *letters.choose(&mut rng).unwrap();
                let mut corrupted = chars.clone();
                corrupted[pos] = confuse(chars[pos]);
                let anchor: String = corrupted.into_iter().collect();
                (im.field, im.raw_text.replacen(&im.anchor, &anchor, 1))
            })
            .collect()
    }
}

/// Common OCR confusions; anything else becomes 'x'.
pub fn confuse(c: char) -> char {
    match c.to_ascii_lowercase() {
        'i' | 'l' => '1',
        'o' => '0',
        'e' => 'c',
        'n' => 'm',
        'a' => '4',
        's' => '5',
        't' => 'f',
        'r' => 'n',
        'u' => 'v',
        'x' => 'y',
        _ => 'x',
    }
}
