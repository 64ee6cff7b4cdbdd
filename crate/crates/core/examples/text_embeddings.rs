//! Deterministic hashed text embeddings for queries built from article
//! metadata.
//!
//! ```bash
//! cargo run --example text_embeddings
//! ```

use iv4rec::data::{news_query, EmbeddingKind, EmbeddingTable, HashEmbedder};
use iv4rec::numerics::cosine;

fn main() -> iv4rec::Result<()> {
    let articles = [
        ("N1", "sports", "football", vec!["Lionel Messi", "Inter Miami"], "Messi scores twice"),
        ("N2", "sports", "football", vec!["Inter Miami"], "Miami win at home"),
        ("N3", "finance", "markets", vec![], "Stocks slide as rates rise"),
    ];
    let mut embedder = HashEmbedder::new(64);
    let mut table = EmbeddingTable::new(EmbeddingKind::Query, 64);
    for (id, cat, sub, ents, title) in &articles {
        let q = news_query(cat, sub, ents, title);
        println!("{id}: `{q}`");
        table.insert(*id, embedder.embed(&q))?;
    }
    let v = |id: &str| table.get(id).expect("inserted");
    println!("cos(N1, N2) = {:.3}", cosine(v("N1"), v("N2")).unwrap_or(0.0));
    println!("cos(N1, N3) = {:.3}", cosine(v("N1"), v("N3")).unwrap_or(0.0));
    embedder.embed("!!!");
    println!("{} of {} inputs had no tokens", embedder.empty_inputs, embedder.total_inputs);
    Ok(())
}
