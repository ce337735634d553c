use evs_core::io::{load, read_latents, read_net, read_worlds, save, write_latents, write_net, write_worlds};
use evs_core::models::{build_worlds, AttentionShape, ToyAttentionDenoiser, WorldConfig};
use evs_core::{Error, Latent, Spatial, Temporal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vids: Vec<Latent> = (0..3).map(|_| Latent::gaussian(5, 7, &mut rng)).collect();
    let p = dir.path().join("v.evslat");
    save(&p, |w| write_latents(w, &vids)).unwrap();
    let back: Vec<Latent> = load(&p, |r| read_latents(r)).unwrap();
    assert_eq!(back, vids);
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(&bytes[..6], b"EVSLAT");
    assert_eq!(bytes.len(), 24 + 3 * 5 * 7 * 8);

    let (sw, tw) = build_worlds::<f64>(&WorldConfig::default(), 8).unwrap();
    let p = dir.path().join("w.evswld");
    save(&p, |w| write_worlds(w, &sw, &tw)).unwrap();
    let (sw2, tw2): (Spatial, Temporal) = load(&p, |r| read_worlds(r)).unwrap();
    assert_eq!((sw2, tw2), (sw, tw));

    let net = ToyAttentionDenoiser::<f64>::new(AttentionShape::default(), 2).unwrap();
    let p = dir.path().join("n.evsnet");
    save(&p, |w| write_net(w, &net)).unwrap();
    let net2: ToyAttentionDenoiser<f64> = load(&p, |r| read_net(r)).unwrap();
    assert_eq!(net2.params(), net.params());
    assert_eq!(net2.shape(), net.shape());
}

#[test]
fn wrong_magic_and_missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("n.evsnet");
    let net = ToyAttentionDenoiser::<f64>::new(AttentionShape::default(), 2).unwrap();
    save(&p, |w| write_net(w, &net)).unwrap();
    assert!(matches!(load(&p, |r| read_latents::<f64>(r)), Err(Error::Format { .. })));
    assert!(matches!(
        load(dir.path().join("absent"), |r| read_latents::<f64>(r)),
        Err(Error::Io(_))
    ));
}
