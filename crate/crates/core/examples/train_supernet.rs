//! Train a weight-sharing supernet on Gaussian blobs and score a few
//! architectures with the shared weights.
//!
//! cargo run --example train_supernet

use progressive_nas::archspace::{new_full_space, CellTopology, DiscreteArch, OperationCatalog};
use progressive_nas::dataset::{make_blobs, split};
use progressive_nas::supernet::{evaluate_fitness, train_supernet, Supernet, TrainConfig};

fn main() {
    let data = make_blobs(4, 64, 8, 1.0, 0).unwrap();
    let (train, val) = split(&data, 0.5, 0).unwrap();
    let space = new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard());
    let mut net = Supernet::new(space, 8, 4, 1).unwrap();

    let stats = train_supernet(&mut net, &train, &TrainConfig { seed: 1, ..TrainConfig::default() }).unwrap();
    for (epoch, loss) in stats.epoch_loss.iter().enumerate().step_by(4) {
        println!("epoch {epoch:>2}  loss {loss:.4}");
    }
    println!("{} SGD steps\n", stats.steps);

    // ops: 0 zero, 1 skip, 2 linear, 3 linear_relu, 4 scale
    for text in ["0-0-0-0-0-0", "1-0-0-0-0-0", "2-1-1-3-1-1", "3-3-3-3-3-3", "2-2-2-2-2-2"] {
        let arch: DiscreteArch = text.parse().unwrap();
        println!("{arch}  validation accuracy {:.3}", evaluate_fitness(&net, &arch, &val).unwrap());
    }

    let mut buf = Vec::new();
    net.save_checkpoint(1, None, &mut buf).unwrap();
    let (restored, _) = Supernet::load_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(restored, net);
    println!("\ncheckpoint round trip: {} bytes", buf.len());
}
