use std::fmt;

/// Marker value: the completion held no fenced code block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoLeanCodeFound;

impl fmt::Display for NoLeanCodeFound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(crate::verifier::NO_LEAN_CODE_FOUND)
    }
}

/// A fenced block of a markdown completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock<'a> {
    /// Info string after the opening fence, trimmed (e.g. `lean`, `lean4`).
    pub info: &'a str,
    pub content: &'a str,
    /// Byte range of the whole block, fences included.
    pub start: usize,
    pub end: usize,
}

impl FencedBlock<'_> {
    pub fn is_lean(&self) -> bool {
        let lang = self.info.split_whitespace().next().unwrap_or("");
        lang.eq_ignore_ascii_case("lean") || lang.eq_ignore_ascii_case("lean4")
    }
}

/// Closed ``` fenced blocks of `text`, in order. An unclosed trailing fence
/// is not a block.
pub fn fenced_blocks(text: &str) -> Vec<FencedBlock<'_>> {
    let mut blocks = Vec::new();
    let mut open: Option<(usize, &str, usize)> = None;
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let trimmed = line.trim_start();
        if !trimmed.starts_with("```") {
            continue;
        }
        match open {
            None => {
                let info = trimmed[3..].trim();
                open = Some((line_start, info, offset));
            }
            Some((start, info, content_start)) => {
                if trimmed.trim_end() == "```" {
                    let content = &text[content_start..line_start];
                    let content = content.strip_suffix('\n').unwrap_or(content);
                    let content = content.strip_suffix('\r').unwrap_or(content);
                    blocks.push(FencedBlock {
                        info,
                        content,
                        start,
                        end: offset,
                    });
                    open = None;
                }
            }
        }
    }
    blocks
}

/// Content of the last `lean`-labeled fenced block, else of the last fenced
/// block of any label.
pub fn extract_proof(completion: &str) -> Result<String, NoLeanCodeFound> {
    let blocks = fenced_blocks(completion);
    blocks
        .iter()
        .rev()
        .find(|b| b.is_lean())
        .or_else(|| blocks.last())
        .map(|b| b.content.to_string())
        .ok_or(NoLeanCodeFound)
}
