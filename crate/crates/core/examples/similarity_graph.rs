//! Tf-idf cosine graph over the paragraphs of one synthetic cluster, and the
//! relation bias the encoder derives from it.

use acm::corpus::{cluster_graph, generate_synthetic_corpus, SyntheticConfig};
use acm::graph_encoder::relation_bias;
use acm::numeric::RngState;

fn main() -> acm::Result<()> {
    let config = SyntheticConfig {
        clusters: 1,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&config, &RngState::new(11))?;
    let cluster = &corpus.clusters[0];
    for i in 0..cluster.num_paragraphs() {
        println!("p{i}: {}", corpus.vocab.detokenize(cluster.paragraph_tokens(i)?));
    }

    let graph = cluster_graph(cluster, 400)?;
    println!("\nsimilarity");
    for i in 0..graph.len() {
        let row: Vec<String> = (0..graph.len()).map(|j| format!("{:.3}", graph.get(i, j))).collect();
        println!("  {}", row.join(" "));
    }
    let r = relation_bias(&graph, 1.0)?;
    println!("relation bias (sigma 1)");
    for i in 0..graph.len() {
        let row: Vec<String> = r.row(i).iter().map(|x| format!("{x:+.3}")).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
