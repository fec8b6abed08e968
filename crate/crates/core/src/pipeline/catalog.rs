use once_cell::sync::Lazy;
use serde::Serialize;

/// One selectable prompt: `"a cute and adorable {subject}, {keywords…}"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptEntry {
    pub id: u32,
    pub subject: &'static str,
    pub keywords: Vec<&'static str>,
    pub text: String,
}

pub const CATALOG_VERSION: u32 = 1;

const ENTRIES: [(&str, [&str; 3]); 13] = [
    ("bunny", ["pixar character", "octane render", "highly detailed"]),
    ("kitten", ["studio ghibli", "soft lighting", "watercolor painting"]),
    ("puppy", ["disney style", "trending on artstation", "digital art"]),
    ("panda", ["unreal engine", "cinematic lighting", "concept art"]),
    ("fox", ["fantasy art", "dramatic lighting", "oil painting"]),
    ("owl", ["storybook illustration", "pastel colors", "intricate details"]),
    ("hedgehog", ["claymation", "miniature", "tilt shift photography"]),
    ("penguin", ["low poly", "isometric view", "vibrant colors"]),
    ("koala", ["anime style", "makoto shinkai", "beautiful sky"]),
    ("otter", ["photorealistic", "golden hour", "bokeh"]),
    ("duckling", ["children book illustration", "gouache", "warm palette"]),
    ("lamb", ["pixel art", "retro game", "cozy atmosphere"]),
    ("red panda", ["cyberpunk", "neon lights", "volumetric fog"]),
];

static CATALOG: Lazy<Vec<PromptEntry>> = Lazy::new(|| {
    ENTRIES
        .iter()
        .zip(1..)
        .map(|((subject, keywords), id)| PromptEntry {
            id,
            subject,
            keywords: keywords.to_vec(),
            text: format!("a cute and adorable {subject}, {}", keywords.join(", ")),
        })
        .collect()
});

/// The fixed 13-entry prompt catalog, ordered by id.
pub fn prompt_catalog() -> &'static [PromptEntry] {
    &CATALOG
}

/// Catalog entry by 1-based id.
pub fn catalog_prompt(id: u32) -> Option<&'static PromptEntry> {
    id.checked_sub(1).and_then(|i| CATALOG.get(i as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_entries_with_unique_ids() {
        let c = prompt_catalog();
        assert_eq!(c.len(), 13);
        for (i, e) in c.iter().enumerate() {
            assert_eq!(e.id as usize, i + 1);
            assert!(e.text.starts_with("a cute and adorable "));
            for k in &e.keywords {
                assert!(e.text.contains(k));
            }
        }
    }

    #[test]
    fn first_entry_is_the_bunny() {
        let e = catalog_prompt(1).unwrap();
        assert!(e.text.starts_with("a cute and adorable bunny"));
        assert!(e.text.contains("pixar character"));
        assert!(catalog_prompt(0).is_none());
        assert!(catalog_prompt(14).is_none());
    }
}
