/// Splits an utterance into sentences.
///
/// Whitespace is normalized first; a sentence ends at '.', '?' or '!' when it is
/// followed by whitespace or the end of the text. Joining the result with single
/// spaces gives back the whitespace-normalized input.
pub fn sentence_split(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for word in text.split_whitespace() {
        current.push(word);
        if word.ends_with(['.', '?', '!']) {
            sentences.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        sentences.push(current.join(" "));
    }
    sentences
}
