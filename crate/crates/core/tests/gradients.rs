mod common;

use common::{gradient_check, random_problem};
use mfembed_core::mf::{loss_and_gradients, Example};
use mfembed_core::{init_params, split_questions, train};

#[test]
fn analytic_gradients_match_central_differences() {
    for c in 0..20 {
        let (p, batch) = random_problem(c);
        let worst = gradient_check(&p, &batch, 1e-5, 1e-8);
        assert!(worst <= 1e-5, "config {c}: relative error {worst:e}");
    }
}

#[test]
fn gradients_are_batch_means() {
    let (p, batch) = random_problem(3);
    let ex = batch.examples();
    let (loss, g) = loss_and_gradients(&p, &ex).unwrap();
    let mut loss_sum = 0.0;
    let mut g_sum = vec![0.0; p.param_count()];
    for e in &ex {
        let (l, gi) = loss_and_gradients(&p, std::slice::from_ref::<Example<'_>>(e)).unwrap();
        loss_sum += l;
        g_sum
            .iter_mut()
            .zip(gi.flatten())
            .for_each(|(a, b)| *a += b);
    }
    let n = ex.len() as f64;
    assert!((loss - loss_sum / n).abs() < 1e-12);
    for (a, b) in g.flatten().iter().zip(&g_sum) {
        assert!((a - b / n).abs() < 1e-12);
    }
}

#[test]
fn training_loss_falls_on_planted_data() {
    let w = common::world(4, 0.0);
    let split = split_questions(&w.dataset, (0.8, 0.1, 0.1), 4).unwrap();
    let cfg = common::planted_train_config(9, 20);
    let init = init_params(w.dataset.n_models(), w.embeddings.dim(), &cfg).unwrap();
    let (_, history) = train(&w.dataset, &w.embeddings, &split, &cfg).unwrap();
    let ex: Vec<Example<'_>> = w
        .dataset
        .records()
        .iter()
        .filter(|r| split.train.contains(&r.question))
        .map(|r| Example {
            model: r.model,
            q_vector: w.embeddings.vector(r.question),
            label: r.label,
        })
        .collect();
    let initial = loss_and_gradients(&init, &ex).unwrap().0;
    let last = *history.train_loss.last().unwrap();
    assert!(last < 0.5 * initial, "{initial} -> {last}");
    assert!(history.train_loss.first().unwrap() > &last);
}
