use mckean::model_catalog;

fn main() {
    for entry in model_catalog() {
        let card = entry.model.regularity();
        print!("{:<14} d = {}, q = {}, {:?}", entry.id, entry.model.dim(), entry.model.noise_dim(), card);
        match entry.flow {
            Some(flow) => println!(", law at T = 1: {:?}", flow.at(1.0)),
            None => println!(", no closed-form law"),
        }
    }
}
